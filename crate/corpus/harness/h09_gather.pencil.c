void gather(int n, int A[const restrict static n], int t[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++)
    B[i] = A[t[i]] * 2;
}
