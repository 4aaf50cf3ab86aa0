int count_even(int n, int A[const restrict static n])
{
  int c = 0;
#pragma pencil reduction (+:c)
  for (int i = 0; i < n; i++)
    c += 1 - A[i] % 2;
  return c;
}
