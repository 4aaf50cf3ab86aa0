int logic(int n, int A[const restrict static n])
{
  int hits = 0;
  for (int i = 0; i < n; i++)
    if ((A[i] > 2 && A[i] < 6) || !(A[i] != 0))
      hits += 1;
  return hits;
}
