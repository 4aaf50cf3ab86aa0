int find(int n, int key, int A[const restrict static n])
{
  for (int i = 0; i < n; i++)
    if (A[i] == key)
      return i;
  return -1;
}

void find_all(int n, int A[const restrict static n], int pos[const restrict static n])
{
  for (int k = 0; k < n; k++)
    pos[k] = find(n, k, A);
}
